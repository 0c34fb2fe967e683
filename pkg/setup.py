from pathlib import Path
from setuptools import setup, find_packages

ROOT = Path(__file__).parent

VERSION = "0.1.0"
PACKAGE_NAME = "trackwatch"
AUTHOR = ""
AUTHOR_EMAIL = ""
URL = ""

LICENSE = "MIT License"
DESCRIPTION = "Streaming anomaly detection for AIS vessel tracks"
LONG_DESCRIPTION = (ROOT / "README.md").read_text()
LONG_DESC_TYPE = "text/markdown"

with open(ROOT / "requirements.txt") as f:
    INSTALL_REQUIRES = [line for line in f.read().splitlines() if line.strip()]

setup(
    name=PACKAGE_NAME,
    version=VERSION,
    description=DESCRIPTION,
    long_description=LONG_DESCRIPTION,
    long_description_content_type=LONG_DESC_TYPE,
    author=AUTHOR,
    license=LICENSE,
    author_email=AUTHOR_EMAIL,
    url=URL,
    install_requires=INSTALL_REQUIRES,
    extras_require={"test": ["pytest>=7.3.1"]},
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    python_requires=">=3.8",
    entry_points={"console_scripts": ["trackwatch=trackwatch.cli:main"]},
)
