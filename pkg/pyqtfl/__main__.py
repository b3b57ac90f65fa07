"""
Experiment Command Line Entrypoint
"""
import sys

from .cli import main

#** Init **#

if __name__ == '__main__':
    sys.exit(main())
