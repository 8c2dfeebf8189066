"""Main entry point for ``python -m finegrained`` and the ``finegrained`` script."""

import sys

from finegrained.cli import main

if __name__ == "__main__":
    sys.exit(main())
