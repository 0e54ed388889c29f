import sys

from infip.cli import main

sys.exit(main())
