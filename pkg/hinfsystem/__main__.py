import sys
from hinfsystem.cli import main

sys.exit(main())
