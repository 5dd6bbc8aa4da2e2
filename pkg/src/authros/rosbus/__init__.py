"""ROS-style master, topic bus and monitoring subscriber."""
from .bus import (
    BusError,
    CaptureError,
    CaptureStream,
    Captured,
    Delivery,
    DuplicateNode,
    Master,
    NodeHandle,
    Role,
    RoleError,
    master_register,
    monitor,
    publish,
)
from .messages import (
    ImageMsg,
    MessageType,
    OdometryMsg,
    ParseError,
    TopicName,
    encode_message,
    parse_image,
    parse_message,
    parse_odometry,
)
from .replay import ReplayFormatError, ReplayRecord, inject, read_replay, write_replay
