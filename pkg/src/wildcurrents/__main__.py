import sys

from .io import main

sys.exit(main())
