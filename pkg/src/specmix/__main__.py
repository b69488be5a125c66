import sys

from specmix.cli import main

sys.exit(main())
