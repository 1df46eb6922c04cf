#!/usr/bin/env python3
"""
CymbaDiff Setup Script
Automated environment setup for the CymbaDiff backend
"""

import os
import sys
import subprocess
import shutil
from pathlib import Path
import platform

class Colors:
    HEADER = '\033[95m'
    OKBLUE = '\033[94m'
    OKGREEN = '\033[92m'
    WARNING = '\033[93m'
    FAIL = '\033[91m'
    ENDC = '\033[0m'
    BOLD = '\033[1m'

def print_header(text):
    print(f"\n{Colors.HEADER}{Colors.BOLD}{'='*60}{Colors.ENDC}")
    print(f"{Colors.HEADER}{Colors.BOLD}{text.center(60)}{Colors.ENDC}")
    print(f"{Colors.HEADER}{Colors.BOLD}{'='*60}{Colors.ENDC}\n")

def print_success(text):
    print(f"{Colors.OKGREEN}✅ {text}{Colors.ENDC}")

def print_error(text):
    print(f"{Colors.FAIL}❌ {text}{Colors.ENDC}")

def print_warning(text):
    print(f"{Colors.WARNING}⚠️  {text}{Colors.ENDC}")

def print_info(text):
    print(f"{Colors.OKBLUE}ℹ️  {text}{Colors.ENDC}")

def run_command(command, cwd=None):
    """Run a command and return (ok, stdout, stderr)"""
    result = subprocess.run(command, cwd=cwd, capture_output=True, text=True)
    return result.returncode == 0, result.stdout, result.stderr

def check_system_requirements():
    """Python 3.9+ is the only hard requirement"""
    print_header("CHECKING SYSTEM REQUIREMENTS")
    version = sys.version_info
    if version < (3, 9):
        print_error(f"Python 3.9+ required, found {version.major}.{version.minor}")
        return False
    print_success(f"Python {version.major}.{version.minor}.{version.micro}")
    return True

def setup_backend():
    """Create the virtual environment, install requirements and the .env file"""
    print_header("SETTING UP BACKEND")

    backend_dir = Path("backend")
    if not backend_dir.exists():
        print_error("Backend directory not found")
        return None

    print_info("Creating Python virtual environment...")
    ok, _, stderr = run_command([sys.executable, "-m", "venv", "venv"], cwd=backend_dir)
    if not ok:
        print_error(f"Failed to create virtual environment: {stderr}")
        return None
    print_success("Virtual environment created")

    bin_dir = "Scripts" if platform.system() == "Windows" else "bin"
    python_command = str(Path("venv") / bin_dir / "python")

    print_info("Installing Python dependencies...")
    for args in (["-m", "pip", "install", "--upgrade", "pip"], ["-m", "pip", "install", "-r", "requirements.txt"]):
        ok, _, stderr = run_command([python_command, *args], cwd=backend_dir)
        if not ok:
            print_error(f"Failed to install dependencies: {stderr}")
            return None
    print_success("Python dependencies installed")

    env_example = backend_dir / ".env.example"
    env_file = backend_dir / ".env"
    if env_example.exists() and not env_file.exists():
        shutil.copy(env_example, env_file)
        print_success("Environment file created (.env)")
        print_warning("Set SENTRY_DSN in .env to enable error reporting")

    return python_command

def generate_toy_data(python_command):
    """Write the default toy dataset into backend/data"""
    print_header("GENERATING TOY DATA")
    ok, stdout, stderr = run_command([python_command, "-m", "app.main", "gen-toy"], cwd="backend")
    if not ok:
        print_error(f"Toy data generation failed: {stderr}")
        return False
    print_success(f"Toy scenes written to backend/{stdout.strip()}")
    return True

def print_next_steps():
    print_header("SETUP COMPLETE")
    print("Next steps:")
    print("  cd backend")
    print("  venv/bin/python run_toy.py          # desk-scale run of every stage")
    print("  venv/bin/python -m app.main --help  # individual commands")
    print("  venv/bin/python -m pytest           # test suite (--runslow for the pipeline test)")

def main():
    os.chdir(Path(__file__).resolve().parent)
    if not check_system_requirements():
        sys.exit(1)
    python_command = setup_backend()
    if python_command is None:
        sys.exit(1)
    if "--skip-data" not in sys.argv and not generate_toy_data(python_command):
        sys.exit(1)
    print_next_steps()

_BUILD_COMMANDS = {"egg_info", "dist_info", "editable_wheel", "bdist_wheel", "sdist", "build", "build_py", "develop", "install"}

if __name__ == "__main__":
    if _BUILD_COMMANDS.intersection(sys.argv[1:]):
        # Invoked by a packaging backend: metadata lives in pyproject.toml
        from setuptools import setup
        setup()
    else:
        main()
