from .common import *
from .log import *
from .group import *
from .operator import *
from .runner import *
from .live import *
