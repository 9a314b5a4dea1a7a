#!/usr/bin/env python3
"""
INVSEG command-line entry point.

Usage:
    python scripts/invseg.py verify --precision f64
    python scripts/invseg.py profile-memory --arch all --levels 3 --blocks 1,2,4,8
"""

import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.cli import main


if __name__ == "__main__":
    sys.exit(main())
