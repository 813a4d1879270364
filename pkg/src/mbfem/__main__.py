"""Allow ``python -m mbfem`` as an alternative to the ``mbfem`` script."""

import sys

from .cli import main

sys.exit(main())
