import sys

from kernkit.main import main

sys.exit(main())
