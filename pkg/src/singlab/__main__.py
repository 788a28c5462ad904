import sys

from singlab.cli import main

sys.exit(main())
