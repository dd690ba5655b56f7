"""
Configuration file for the Quantum Gambling simulator
"""
import logging
import os
from dotenv import load_dotenv

load_dotenv()

# Network Configuration (casino side listens, player connects)
GAMBLING_HOST = os.getenv("GAMBLING_HOST", "127.0.0.1")
GAMBLING_PORT = int(os.getenv("GAMBLING_PORT", "7201"))
RECV_TIMEOUT = float(os.getenv("RECV_TIMEOUT", "10.0"))

# Wire Configuration
MAX_PAYLOAD_BYTES = int(os.getenv("MAX_PAYLOAD_BYTES", str(2 ** 20)))

# Simulation Configuration
DEFAULT_SEED = int(os.getenv("DEFAULT_SEED", "20240601"))
DEFAULT_EXTRA_BOXES = int(os.getenv("DEFAULT_EXTRA_BOXES", "2"))

# Numerical Tolerances
NORMALIZATION_TOL = float(os.getenv("NORMALIZATION_TOL", "1e-9"))
IDENTITY_TOL = float(os.getenv("IDENTITY_TOL", "1e-12"))
OPTIMIZE_TOL = float(os.getenv("OPTIMIZE_TOL", "1e-9"))

# Session Monitor Configuration
MONITOR_SIGMA = float(os.getenv("MONITOR_SIGMA", "4.0"))

# Logging Configuration
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FORMAT = os.getenv("LOG_FORMAT", "%(asctime)s %(levelname)s %(name)s: %(message)s")

# API Server Configuration
API_HOST = os.getenv("API_HOST", "0.0.0.0")
API_PORT = int(os.getenv("API_PORT", "8000"))


def configure_logging(level: str = None) -> None:
    """Install one stream handler on the root logger (entry points only)."""
    logging.basicConfig(level=(level or LOG_LEVEL).upper(), format=LOG_FORMAT)
