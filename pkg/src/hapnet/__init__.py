"""Power-cost optimization for caching-enabled multi-HAP content delivery."""

from . import beamforming, channel, harness, ppo_agent, report, routing, scenario, topology, traffic

__version__ = "0.1.0"

__all__ = [
    "beamforming",
    "channel",
    "harness",
    "ppo_agent",
    "report",
    "routing",
    "scenario",
    "topology",
    "traffic",
    "__version__",
]
