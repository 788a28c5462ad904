from abc import ABC, abstractmethod

from singlab.mixture import TrainingSet


class DatasetSource(ABC):
    """Abstract base class for training-set sources."""

    @abstractmethod
    def load(self) -> TrainingSet:
        """
        Build the training set this source describes.

        Returns:
            TrainingSet: points and optional labels
        """
        pass

    def describe(self) -> str:
        return self.__class__.__name__
