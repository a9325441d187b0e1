#!/usr/bin/env python3
"""
ModelBandit - Command Line Interface
Bandit-based model selection for deformable object manipulation

Usage:
    python modelbandit_cli.py synth --preset small --runs 100 --seed 7
    python modelbandit_cli.py task --scenario chain-spread --output results/spread
    python modelbandit_cli.py selftest
"""

import sys

from modelbandit.cli import main

if __name__ == "__main__":
    sys.exit(main())
