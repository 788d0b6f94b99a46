import sys

from synthwords.cli import main

sys.exit(main())
