"""Channel-aware distributionally robust federated learning over an AirComp uplink."""

from airfed.config import RoundRecord, SimConfig, load_config, parse_config, seeded_rng
from airfed.trainer import Simulation, run

__all__ = ["RoundRecord", "SimConfig", "Simulation", "load_config", "parse_config", "run", "seeded_rng"]
__version__ = "0.1.0"
