import sys

from maskroadmap.cli import main

sys.exit(main())
