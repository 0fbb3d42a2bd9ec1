from datetime import datetime

import pytest

from metacomment.corpus import Comment, LabeledDataset, LabelSet


def make_comment(cid="c1", title="", text="Hallo Welt.", **kwargs):
    kwargs.setdefault("timestamp", datetime(2016, 5, 2, 9, 30))
    return Comment(id=cid, title=title, text=text, **kwargs)


@pytest.fixture
def small_dataset():
    entries = (
        (make_comment("a1", title="Der Artikel", text="Guter Beitrag zum Thema.",
                      department="politik", position=1, has_quote=False),
         LabelSet.of("Meta", "Journalist")),
        (make_comment("a2", text="Die Redaktion sollte das korrigieren!",
                      department="politik", position=2, has_quote=True),
         LabelSet.of("Meta", "Media")),
        (make_comment("a3", text="Warum wurde mein Beitrag zensiert?",
                      department="wirtschaft", position=3, has_quote=True),
         LabelSet.of("Meta", "Moderator")),
        (make_comment("a4", text="Das Wetter war gestern besser.",
                      department="panorama", position=4, has_quote=False),
         LabelSet.of("NonMeta")),
    )
    return LabeledDataset(entries, source_tag="fixture")
