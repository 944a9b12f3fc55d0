import sys

from bnpeb.cli import main

sys.exit(main())
