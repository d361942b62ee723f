#!/usr/bin/env python3
"""
Direct CLI runner for development
"""

import sys
from src.hessmooth.__main__ import main

if __name__ == "__main__":
    sys.exit(main())
