"""Run the Biot-Stokes lab from a source checkout: python biot_stokes_cli.py verify adjoint config.txt"""

import sys

from src.cli_io.main import main

if __name__ == "__main__":
    sys.exit(main())
