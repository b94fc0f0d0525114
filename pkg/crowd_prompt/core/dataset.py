"""
Набор сцен: изображения, аннотации и фиксированное разбиение train/test.
"""

from typing import Dict, List, Literal, Mapping

import numpy as np
from pydantic import BaseModel, ConfigDict

from crowd_prompt.modules.constants import ERROR_MESSAGES
from crowd_prompt.modules.errors import UnknownSceneError
from crowd_prompt.modules.targets import SceneAnnotation


class Scene(BaseModel):
    """Изображение (C, H, W) в [0, 1] и его аннотация."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    image: np.ndarray
    annotation: SceneAnnotation
    split: Literal["train", "test"] = "train"

    @property
    def scene_id(self) -> str:
        return self.annotation.scene_id


class Dataset(BaseModel):
    """Сцены обучения и отложенные сцены теста."""
    model_config = ConfigDict(frozen=True)

    train: List[Scene]
    test: List[Scene] = []

    @property
    def scenes(self) -> List[Scene]:
        return list(self.train) + list(self.test)

    def by_id(self, scene_id: str) -> Scene:
        for scene in self.scenes:
            if scene.scene_id == scene_id:
                return scene
        raise UnknownSceneError(ERROR_MESSAGES["UNKNOWN_SCENE"].format(scene=scene_id))

    def with_annotations(self, annotations: Mapping[str, SceneAnnotation]) -> "Dataset":
        """
        Копия набора с заменой аннотаций для указанных сцен.

        Args:
            annotations: Новые аннотации по идентификаторам сцен

        Returns:
            Dataset: Новый набор (изображения общие)
        """
        def swap(scenes: List[Scene]) -> List[Scene]:
            return [
                s.model_copy(update={"annotation": annotations[s.scene_id]})
                if s.scene_id in annotations else s
                for s in scenes
            ]
        return Dataset(train=swap(self.train), test=swap(self.test))

    def images(self) -> Dict[str, np.ndarray]:
        return {s.scene_id: s.image for s in self.scenes}
