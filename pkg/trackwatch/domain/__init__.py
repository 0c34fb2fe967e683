from .common import *
from .grid import *
