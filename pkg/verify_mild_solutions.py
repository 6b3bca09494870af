#!/usr/bin/env python
"""
Wrapper script to run the verification experiments from a source checkout.
This simply imports and runs the main function of the mildns package.
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

try:
    from mildns.cli import main
except ImportError as e:
    print(f"Error importing module: {e}")
    print("\nMake sure you have installed the required dependencies:")
    print("  pip install numpy  # For the spectral fields")
    print("  pip install scipy  # For FFTs and fits")
    sys.exit(1)

sys.exit(main())
