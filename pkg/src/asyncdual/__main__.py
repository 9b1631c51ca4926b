import sys

from asyncdual.cli import main

sys.exit(main())
