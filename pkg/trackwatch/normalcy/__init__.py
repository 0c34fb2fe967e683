from .common import *
from .model import *
from .detection import *
from .geofence import *
from .storage import *
