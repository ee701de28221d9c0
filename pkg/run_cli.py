#!/usr/bin/env python
"""
Command-line launcher.
Usage: python run_cli.py {simulate,analyze,spectrum,verify} [options]
"""

if __name__ == '__main__':
    import sys

    from src.cli.app import main

    sys.exit(main())
