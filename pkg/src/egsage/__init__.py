"""Edge-featured GraphSAGE for flow-based network intrusion detection."""

__version__ = "0.1.0"
