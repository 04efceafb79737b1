"""
🚀 DUST - exact change-point detection with dual pruning
Entry point: python main.py <segment|simulate|worstcase|bench> [options]
"""
import os
import sys

# Add current directory to path for imports
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from cli_bench import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
