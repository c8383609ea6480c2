import sys

from predcacc.cli import main

sys.exit(main())
