import sys

from rqm.cli import main

sys.exit(main())
