import sys

from formctl.cli import main

sys.exit(main())
