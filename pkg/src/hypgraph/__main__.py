"""Allow ``python -m hypgraph``."""
import sys

from .cli import main

sys.exit(main())
