#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Masked RBM Toolkit - Run Script
This script runs one command of the toolkit, e.g.

    python run.py toy-gen --seed 7 --out data/toy
"""

import sys
from src.main import main

if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nKeyboard interrupt received. Shutting down...")
        sys.exit(130)
