"""
Runtime settings read from the environment (.env supported)
"""
import os

from dotenv import load_dotenv

load_dotenv()

JOBS = int(os.getenv("FDIA_JOBS", 1))
OUTPUT_DIR = os.getenv("FDIA_OUTPUT_DIR", "./results")
LOG_LEVEL = os.getenv("FDIA_LOG_LEVEL", "INFO")

# Monte Carlo defaults
RUNS = int(os.getenv("FDIA_RUNS", 50))
ACCEPTANCE_RUNS = int(os.getenv("FDIA_ACCEPTANCE_RUNS", 20))
SEED = int(os.getenv("FDIA_SEED", 2024))

# Riccati iteration cap for gain synthesis
GAIN_ITERS = int(os.getenv("FDIA_GAIN_ITERS", 10000))
