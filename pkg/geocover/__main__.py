import sys

from geocover.main import main

sys.exit(main())
