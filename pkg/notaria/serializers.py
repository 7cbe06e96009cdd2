import json
import typing
from abc import ABCMeta, abstractmethod

try:
    import msgpack
except ImportError:  # pragma: no cover
    msgpack = None  # type: ignore

try:
    import cbor2 as cbor
except ImportError:  # pragma: no cover
    cbor = None  # type: ignore

from notaria.exceptions import SerializerNotFound


class BaseSerializer(metaclass=ABCMeta):
    """
    Base Serializer
    """

    name: str
    content_type: str
    suffix: str

    @abstractmethod
    def encode(self, data: typing.Any) -> bytes:
        raise NotImplementedError()

    @abstractmethod
    def decode(self, raw_data: bytes) -> typing.Any:
        raise NotImplementedError()


def hex_bytes(value: typing.Any) -> typing.Any:
    if isinstance(value, (bytes, bytearray)):
        return bytes(value).hex()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


class JSONSerializer(BaseSerializer):
    """
    Canonical JSON: sorted keys, fixed separators, bytes as hex. Two equal
    documents always encode to identical bytes.
    """

    name = "json"
    content_type = "application/json"
    suffix = ".json"

    def __init__(
        self,
        default_encode: typing.Optional[typing.Callable] = hex_bytes,
        default_decode: typing.Optional[typing.Callable] = None,
        indent: typing.Optional[int] = 2,
    ) -> None:
        self.default_encode = default_encode
        self.default_decode = default_decode
        self.indent = indent

    def encode(self, data: typing.Any) -> bytes:
        return json.dumps(
            data,
            ensure_ascii=False,
            sort_keys=True,
            indent=self.indent,
            default=self.default_encode,
        ).encode("utf8")

    def decode(self, data: bytes) -> typing.Any:
        return json.loads(
            data.decode("utf8"),
            object_hook=self.default_decode,
        )


class MsgpackSerializer(BaseSerializer):
    """
    Msgpack: https://github.com/msgpack/msgpack-python
    """

    name = "msgpack"
    content_type = "application/x-msgpack"
    suffix = ".msgpack"

    def __init__(
        self,
        default_encode: typing.Optional[typing.Callable] = None,
        default_decode: typing.Optional[typing.Callable] = None,
    ) -> None:
        self.default_encode = default_encode
        self.default_decode = default_decode

    def encode(self, data: typing.Any) -> bytes:
        if msgpack is None:  # pragma: no cover
            raise SerializerNotFound("Need install `msgpack` from pypi.")
        return msgpack.packb(data, default=self.default_encode)

    def decode(self, data: bytes) -> typing.Any:
        if msgpack is None:  # pragma: no cover
            raise SerializerNotFound("Need install `msgpack` from pypi.")
        return msgpack.unpackb(data, object_hook=self.default_decode)


class CBORSerializer(BaseSerializer):
    """
    CBOR: https://tools.ietf.org/html/rfc7049
    """

    name = "cbor"
    content_type = "application/x-cbor"
    suffix = ".cbor"

    def encode(self, data: typing.Any) -> bytes:
        if cbor is None:  # pragma: no cover
            raise SerializerNotFound("Need install `cbor2` from pypi.")
        return cbor.dumps(data, canonical=True)

    def decode(self, data: bytes) -> typing.Any:
        if cbor is None:  # pragma: no cover
            raise SerializerNotFound("Need install `cbor2` from pypi.")
        return cbor.loads(data)


SERIALIZER_NAMES = {
    JSONSerializer.name: JSONSerializer(),
    MsgpackSerializer.name: MsgpackSerializer(),
    CBORSerializer.name: CBORSerializer(),
}

SERIALIZER_TYPES = {
    JSONSerializer.content_type: JSONSerializer(),
    MsgpackSerializer.content_type: MsgpackSerializer(),
    CBORSerializer.content_type: CBORSerializer(),
}

NDJSON = JSONSerializer(indent=None)


def get_serializer(name: str) -> BaseSerializer:
    """
    find serializer by name or content type
    """
    if name in SERIALIZER_NAMES:
        return SERIALIZER_NAMES[name]
    if name in SERIALIZER_TYPES:
        return SERIALIZER_TYPES[name]
    raise SerializerNotFound(f"Serializer `{name}` not found")
