import sys

from agentry.bench.cli import main

sys.exit(main())
