"""Bit-level CAN data-field prediction for intrusion detection."""
from .can_log import CanFrame, filter_by_aid, parse_candump_line, parse_log, payload_to_bits, serialize_frame
from .dataset import Dataset, WindowedExample, build_windows, split_chronological
from .scorer import AnomalyScore, GaussianErrorModel, fit_error_model, p_value, prediction_error, score_stream

__version__ = "0.1.0"
