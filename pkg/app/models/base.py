from typing import Annotated, Any

import numpy as np
from pydantic import ConfigDict, GetCoreSchemaHandler, GetJsonSchemaHandler
from pydantic_core import core_schema


MODEL_CONFIG = ConfigDict(frozen=True, arbitrary_types_allowed=True, populate_by_name=True)


class _ArrayAnnotation:
    """Pydantic v2 adapter turning nested lists or arrays into float ndarrays."""

    ndim: int = 2

    @classmethod
    def __get_pydantic_core_schema__(
        cls, source_type: Any, handler: GetCoreSchemaHandler
    ):
        expected_ndim = cls.ndim

        def validate(value):
            try:
                array = np.array(value, dtype=float)
            except (TypeError, ValueError) as exc:
                raise ValueError(f"cannot convert to a float array: {exc}") from exc
            if expected_ndim == 2 and array.ndim == 1 and array.size == 0:
                array = array.reshape(0, 0)
            if array.ndim != expected_ndim:
                raise ValueError(f"expected a {expected_ndim}-d array, got {array.ndim}-d")
            if not np.all(np.isfinite(array)):
                raise ValueError("array contains NaN or infinite entries")
            array.setflags(write=False)
            return array

        return core_schema.no_info_plain_validator_function(
            validate,
            serialization=core_schema.plain_serializer_function_ser_schema(
                lambda array: np.asarray(array).tolist()
            ),
        )

    @classmethod
    def __get_pydantic_json_schema__(
        cls, core_schema_obj, handler: GetJsonSchemaHandler
    ):
        item: dict = {"type": "number"}
        for _ in range(cls.ndim):
            item = {"type": "array", "items": item}
        return item


class _MatrixAnnotation(_ArrayAnnotation):
    ndim = 2


class _VectorAnnotation(_ArrayAnnotation):
    ndim = 1


Matrix = Annotated[np.ndarray, _MatrixAnnotation]
Vector = Annotated[np.ndarray, _VectorAnnotation]
