"""Allow `python -m tritrain` as an alias for the `tritrain` script."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
