#!/usr/bin/env python3
"""
StepSVM Setup Script
"""

import shutil
import subprocess
import sys
from pathlib import Path


def run_command(command, description):
    """Run a command and handle errors"""
    print(f"{description}...")
    try:
        subprocess.run(command, shell=True, check=True, capture_output=True, text=True)
        print(f"{description} completed")
        return True
    except subprocess.CalledProcessError as e:
        print(f"{description} failed: {e.stderr}")
        return False


def main():
    print("Setting up StepSVM...")

    if not run_command(f"{sys.executable} -m pip install -r requirements.txt", "Installing Python dependencies"):
        sys.exit(1)

    if "--test" in sys.argv:
        if not run_command(f"{sys.executable} -m pip install -r requirements-test.txt", "Installing test dependencies"):
            sys.exit(1)

    env_file = Path("config/.env")
    if not env_file.exists():
        shutil.copy("config/.env.example", env_file)
        print("Created config/.env from config/.env.example")

    print("StepSVM setup completed!")
    print("\nNext steps:")
    print("1. Run: python main.py synth --out data/demo")
    print("2. Run: python main.py select --data data/demo/synthetic.csv --label-column label --id-column sample")
    print("3. Run: python main.py compare --data data/demo/synthetic.csv --label-column label --id-column sample --reps 5")


if __name__ == "__main__":
    # Build backends (pip install .) invoke this file with setuptools commands;
    # hand those to setuptools (metadata lives in pyproject.toml).
    if any(not arg.startswith("-") for arg in sys.argv[1:]):
        from setuptools import setup

        setup()
    else:
        main()
