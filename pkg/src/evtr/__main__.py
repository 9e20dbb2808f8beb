import sys

from evtr.cli import main

sys.exit(main())
