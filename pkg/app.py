#!/usr/bin/env python3
"""
Dual-decoder multilingual speech recognition toolkit
Main entry point: python app.py <verb> [options]
"""

import sys

from app.cli.main import main

if __name__ == '__main__':
    sys.exit(main())
