from .common import *
from .synthetic import *
from .replay import *
from .stats import *
from .harness import *
