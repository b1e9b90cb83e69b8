"""Umbilical-artery Doppler acquisition guidance and spectrum quality checks."""

from .errors import PipelineError
from .evaluation import EvalCurve, MatchSet, match, sensitivity, sweep
from .loss import LossConfig, RoiBatch, faster_rcnn_loss, total_loss, total_loss_gradient
from .probe import GateCandidate, ProbeLocation, insonation_angle, locate_probe
from .spectrum import QaVerdict, Waveform, analyze, assess

__version__ = "0.1.0"

__all__ = [
    "EvalCurve", "GateCandidate", "LossConfig", "MatchSet", "PipelineError",
    "ProbeLocation", "QaVerdict", "RoiBatch", "Waveform", "analyze", "assess",
    "faster_rcnn_loss", "insonation_angle", "locate_probe", "match", "sensitivity",
    "sweep", "total_loss", "total_loss_gradient",
]
