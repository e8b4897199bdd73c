import sys

from social_radar.cli import main

sys.exit(main())
