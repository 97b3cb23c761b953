import sys

from pessirank.cli import main

sys.exit(main())
