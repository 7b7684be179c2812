import pytest

from codewave.errors import ConfigError, IndexFormatError
from codewave.index import (Annotation, IndexEntry, WeaknessClass,
                            annotate_synthetic, collect_files,
                            derive_binary_index, halve_training, load_index,
                            write_index)
from codewave.index import TestCaseIndex as CaseIndex


def make_entry(path, class_ids=(), kind="cwe", anns=()):
    classes = [(WeaknessClass(kind, cid), list(anns)) for cid in class_ids]
    return IndexEntry(path, classes)


class TestWeaknessClass:
    def test_valid_ids(self):
        WeaknessClass.cve("CVE-2009-2562")
        WeaknessClass.cwe("CWE-119")
        WeaknessClass.cwe("NVD-CWE-Other")
        WeaknessClass.cwe("NVD-CWE-noinfo")

    @pytest.mark.parametrize("kind,cid", [
        ("cve", "CVE-09-1"), ("cve", "CWE-119"), ("cwe", "CWE-"),
        ("cwe", "bogus"), ("cve", ""),
    ])
    def test_malformed_ids(self, kind, cid):
        with pytest.raises(ValueError):
            WeaknessClass(kind, cid)


class TestCollectFiles:
    def test_extension_filter(self, tmp_path):
        (tmp_path / "a.c").write_bytes(b"x")
        (tmp_path / "b.java").write_bytes(b"y")
        index = collect_files(tmp_path, [".c"])
        assert [e.path for e in index.entries] == ["a.c"]
        assert index.mode == "test"
        assert all(not e.classes for e in index.entries)

    def test_empty_dir(self, tmp_path):
        assert collect_files(tmp_path, [".c"]).entries == []

    def test_sorted_output(self, tmp_path):
        for name in ("z.c", "a.c", "m/q.c"):
            target = tmp_path / name
            target.parent.mkdir(exist_ok=True)
            target.write_bytes(b"x")
        index = collect_files(tmp_path, [".c"])
        assert [e.path for e in index.entries] == ["a.c", "m/q.c", "z.c"]

    def test_unreadable_root(self, tmp_path):
        with pytest.raises(IOError):
            collect_files(tmp_path / "absent", [".c"])


class TestAnnotateSynthetic:
    def test_direct_capture(self):
        index = CaseIndex("s", "1", [make_entry("CWE119/test1.c")])
        out = annotate_synthetic(index, r"CWE(\d+)")
        assert out.entries[0].class_set() == {WeaknessClass.cwe("CWE-119")}

    def test_no_match_unchanged(self):
        index = CaseIndex("s", "1", [make_entry("misc/util.c")])
        out = annotate_synthetic(index, r"CWE(\d+)")
        assert out.entries[0].classes == []

    def test_pattern_without_group(self):
        index = CaseIndex("s", "1", [make_entry("CWE119/x.c")])
        with pytest.raises(ConfigError):
            annotate_synthetic(index, r"CWE\d+")

    def test_count_preserved(self):
        entries = [make_entry(f"CWE{n}/f.c") for n in (20, 79, 119)]
        entries += [make_entry("other/f.c")]
        out = annotate_synthetic(CaseIndex("s", "1", entries), r"CWE(\d+)")
        assert len(out.entries) == 4
        assert sum(1 for e in out.entries if e.classes) == 3

    def test_synthetic_tree_at_scale(self):
        # ~60K files over 118 weakness ids, the size of a full synthetic tree
        entries = [make_entry(f"CWE{20 + (i % 118)}/case{i:05d}.c")
                   for i in range(60_000)]
        out = annotate_synthetic(CaseIndex("synthetic", "1", entries),
                                 r"CWE(\d+)/")
        assert len(out.entries) == 60_000
        assert all(e.classes for e in out.entries)
        assert len(out.all_classes()) == 118


class TestPersistence:
    def roundtrip(self, index, tmp_path):
        target = tmp_path / "index.xml"
        write_index(index, target)
        return load_index(target)

    def test_roundtrip_identity(self, tmp_path):
        ann = Annotation(lines=(10, 12), fragment="memcpy(dst, src, n)",
                         issue_kind="sink", byte_offset=120)
        index = CaseIndex(
            "wireshark", "1.2.0",
            [IndexEntry("a.c", [(WeaknessClass.cve("CVE-2009-2562"), [ann]),
                                (WeaknessClass.cwe("CWE-119"), [])]),
             IndexEntry("b.c", [])],
            mode="test")
        assert self.roundtrip(index, tmp_path) == index

    def test_roundtrip_is_byte_stable(self, tmp_path):
        index = CaseIndex(
            "case", "2", [make_entry("a.c", ["CWE-119"])], mode="train")
        first = tmp_path / "one.xml"
        second = tmp_path / "two.xml"
        write_index(index, first)
        write_index(load_index(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_duplicate_paths_rejected(self, tmp_path):
        target = tmp_path / "dup.xml"
        target.write_text(
            '<index case="c" version="1" mode="test" kind="source">'
            '<file path="a.c"/><file path="a.c"/></index>')
        with pytest.raises(IndexFormatError, match="a.c"):
            load_index(target)

    def test_train_mode_requires_classes(self, tmp_path):
        target = tmp_path / "train.xml"
        target.write_text(
            '<index case="c" version="1" mode="train" kind="source">'
            '<file path="a.c"/></index>')
        with pytest.raises(IndexFormatError, match="no class"):
            load_index(target)

    def test_mixed_content_kinds_rejected(self):
        entries = [IndexEntry("a.c"), IndexEntry("b.o", content_kind="binary")]
        with pytest.raises(IndexFormatError, match="mixes"):
            CaseIndex("c", "1", entries)

    def test_escaped_characters_roundtrip(self, tmp_path):
        ann = Annotation(fragment='if (a < b && c == "x")')
        index = CaseIndex(
            'quotes "&" case', "1.0",
            [IndexEntry('dir with space/<odd>&name.c',
                        [(WeaknessClass.cwe("CWE-20"), [ann])])])
        assert self.roundtrip(index, tmp_path) == index

    def test_binary_index_rejects_lines(self, tmp_path):
        target = tmp_path / "bin.xml"
        target.write_text(
            '<index case="c" version="1" mode="test" kind="binary">'
            '<file path="a.o"><class kind="cwe" id="CWE-119">'
            '<ann line="3"/></class></file></index>')
        with pytest.raises(IndexFormatError, match="binary"):
            load_index(target)


class TestDeriveBinary:
    MAPPING = {".java": ".class", ".c": ".o"}

    def test_java_entry(self):
        ann = Annotation(lines=(10,), fragment="x")
        index = CaseIndex(
            "c", "1", [IndexEntry("a.java",
                                  [(WeaknessClass.cwe("CWE-119"), [ann])])])
        out = derive_binary_index(index, self.MAPPING)
        entry = out.entries[0]
        assert entry.path == "a.class"
        assert entry.content_kind == "binary"
        wc, anns = entry.classes[0]
        assert anns[0].lines == () and anns[0].fragment is None

    def test_unmapped_dropped(self):
        index = CaseIndex("c", "1", [make_entry("README")])
        assert derive_binary_index(index, self.MAPPING).entries == []

    def test_empty_index(self):
        index = CaseIndex("c", "1", [])
        assert derive_binary_index(index, self.MAPPING).entries == []

    def test_never_emits_source_annotations(self):
        anns = [Annotation(lines=(5, 9), fragment="frag", issue_kind="fix"),
                Annotation(byte_offset=44)]
        index = CaseIndex(
            "c", "1",
            [IndexEntry("x.c", [(WeaknessClass.cwe("CWE-20"), anns)])])
        out = derive_binary_index(index, self.MAPPING)
        for _, out_anns in out.entries[0].classes:
            for ann in out_anns:
                assert ann.lines == ()
                assert ann.fragment is None


class TestHalveTraining:
    def build(self, n):
        return CaseIndex(
            "c", "1", [make_entry(f"f{i:02d}.c", ["CWE-119"]) for i in range(n)],
            mode="train")

    def test_ten_entries(self):
        out = halve_training(self.build(10))
        assert [e.path for e in out.entries] == [f"f{i:02d}.c" for i in range(5)]

    def test_single_entry_kept(self):
        assert len(halve_training(self.build(1)).entries) == 1

    def test_ceiling_rule_composes(self):
        index = self.build(11)
        once = halve_training(index)          # ceil(11/2) = 6
        twice = halve_training(once)          # ceil(6/2) = 3
        assert (len(once.entries), len(twice.entries)) == (6, 3)

    def test_requires_train_mode(self):
        index = CaseIndex("c", "1", [make_entry("a.c")], mode="test")
        with pytest.raises(ConfigError):
            halve_training(index)

    def test_dropped_class_vanishes(self):
        entries = [make_entry("a.c", ["CWE-20"]), make_entry("b.c", ["CWE-20"]),
                   make_entry("c.c", ["CWE-399"]), make_entry("d.c", ["CWE-399"])]
        index = CaseIndex("c", "1", entries, mode="train")
        out = halve_training(index)
        assert out.all_classes() == {WeaknessClass.cwe("CWE-20")}
