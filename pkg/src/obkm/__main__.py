import sys

from obkm.cli import main

sys.exit(main())
