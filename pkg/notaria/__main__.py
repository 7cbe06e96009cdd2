import sys

from notaria.cli import main

sys.exit(main())
