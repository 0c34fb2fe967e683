from .common import *
from .resample import *
from .tracker import *
from .batch import *
