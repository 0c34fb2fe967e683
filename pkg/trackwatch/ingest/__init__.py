from .common import *
from .records import *
from .aivdm import *
from .listener import *
