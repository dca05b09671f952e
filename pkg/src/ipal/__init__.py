"""Protocol-independent industrial intrusion detection toolkit.

Transcribes industrial network traffic into an abstract message format,
aggregates process state, runs communication- and state-based anomaly
detectors, injects attack families for controlled experiments, and scores
detectors point-wise and scenario-wise.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    AlertEvent,
    IpalMessage,
    StateMessage,
    parse_message,
    serialize_message,
    validate_stream,
)
