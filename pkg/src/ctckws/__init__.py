"""Streaming keyword spotting with a CTC-trained LSTM and a character-level decoder."""

from .ctc import DEFAULT_ALPHABET, Alphabet, ctc_grad, ctc_log_likelihood
from .decoder import DetectionEvent, KeywordSpotter, build_keyword_network, detect
from .evaluate import latency_stats, match_detections, pr_sweep
from .features import compute_features, fit_normalizer, normalize
from .lstm import NetworkConfig, StreamState, forward_frame, forward_frames, init_params
from .modelio import load_model, save_model
from .pipeline import SpottingPipeline
from .synth import SynthConfig, build_corpus, concatenate_stream, synth_utterance
from .training import train_stream

__version__ = "0.1.0"
