import os
import sys

# lets test modules share small helpers (random generators, oracles)
sys.path.insert(0, os.path.dirname(__file__))
