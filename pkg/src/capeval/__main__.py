import sys

from capeval.cli import main

sys.exit(main())
