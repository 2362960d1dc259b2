"""Co-action minority game: coordination protocol simulator and exact analysis."""

from camg.model import (
    AgentView,
    Choice,
    DayRecord,
    GameConfig,
    PublicTranscript,
    validate_transcript,
)
from camg.protocol import ProtocolDeviation, replay_protocol_state
from camg.exact import exact_expected_time, linear_fit, verify_functional_equation
from camg.asymptotics import compute_alpha, h_star, h_tilde, oscillation_profile

__all__ = [
    "AgentView",
    "Choice",
    "DayRecord",
    "GameConfig",
    "ProtocolDeviation",
    "PublicTranscript",
    "compute_alpha",
    "exact_expected_time",
    "h_star",
    "h_tilde",
    "linear_fit",
    "oscillation_profile",
    "replay_protocol_state",
    "validate_transcript",
    "verify_functional_equation",
]

__version__ = "0.1.0"
