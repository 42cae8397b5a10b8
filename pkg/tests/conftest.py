import sys
from pathlib import Path

# allow cross-module imports of test helpers (e.g. shared flow oracles)
sys.path.insert(0, str(Path(__file__).parent))
