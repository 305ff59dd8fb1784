import sys

from typedis.cli import main

sys.exit(main())
