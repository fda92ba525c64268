import sys
from pathlib import Path

# test helpers (mock_perspective) live next to the tests
sys.path.insert(0, str(Path(__file__).parent))
