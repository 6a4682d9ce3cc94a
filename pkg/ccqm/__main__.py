import sys

from ccqm.cli import main

sys.exit(main())
