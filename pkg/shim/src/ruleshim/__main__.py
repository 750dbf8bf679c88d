import sys

from ruleshim.harness import main

sys.exit(main())
