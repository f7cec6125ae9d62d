#!/usr/bin/env python3
"""Regenerates the boundary fixtures with pyshp (pip install pyshp).

Each pair NAME.shp/NAME.dbf is written by pyshp, NAME.geojson is pyshp's own
__geo_interface__ of what it reads back, and expected.json records the rings
pyshp reports for every record. The Rust loaders are checked against these.

Run from this directory: python3 gen_fixtures.py
"""
import glob
import json
import math
import os
import random

import shapefile


def square(x0, y0, x1, y1, cw=True):
    ring = [(x0, y0), (x0, y1), (x1, y1), (x1, y0), (x0, y0)]
    return ring if cw else ring[::-1]


def blob(cx, cy, r, n, rng):
    # clockwise star-shaped ring with jittered radius
    pts = []
    for i in range(n):
        a = -2 * math.pi * i / n
        rr = r * (0.75 + 0.25 * rng.random())
        pts.append((cx + rr * math.cos(a), cy + rr * math.sin(a)))
    pts.append(pts[0])
    return pts


def write_pair(name, id_width, records, extra_numeric=False):
    """records: list of (geoid, rings or None for a null shape)."""
    w = shapefile.Writer(name, shapeType=shapefile.POLYGON)
    w.field("GEOID", "C", size=id_width)
    if extra_numeric:
        w.field("POP", "N", size=10, decimal=0)
    for i, (geoid, rings) in enumerate(records):
        if rings is None:
            w.null()
        else:
            w.poly(rings)
        if extra_numeric:
            w.record(geoid, 1000 + i)
        else:
            w.record(geoid)
    w.close()

    r = shapefile.Reader(name)
    features = []
    expected = {}
    for sr in r.iterShapeRecords():
        geoid = sr.record["GEOID"]
        shape = sr.shape
        if shape.shapeType == shapefile.NULL:
            continue
        bounds = list(shape.parts) + [len(shape.points)]
        expected[geoid] = [
            [list(p) for p in shape.points[bounds[k]:bounds[k + 1]]] for k in range(len(shape.parts))
        ]
        features.append({"type": "Feature", "properties": {"GEOID": geoid}, "geometry": shape.__geo_interface__})
    r.close()
    with open(name + ".geojson", "w") as f:
        json.dump({"type": "FeatureCollection", "features": features}, f)
    return expected


def main():
    rng = random.Random(20240611)
    expected = {}

    expected["grid3"] = write_pair(
        "grid3",
        11,
        [("12001000100", [square(0, 0, 1, 1)]), ("12001000200", [square(1, 0, 2, 1)]), ("12001000300", [square(2, 0, 3, 1)])],
    )

    expected["holes"] = write_pair(
        "holes",
        5,
        [
            ("12001", [square(-82.5, 29.5, -82.0, 30.0), square(-82.4, 29.6, -82.2, 29.8, cw=False)]),
            ("12003", [square(-82.0, 29.5, -81.25, 30.125), square(-81.9, 29.6, -81.7, 29.7, cw=False),
                       square(-81.6, 29.8, -81.4, 30.0, cw=False)]),
        ],
    )

    expected["multipart"] = write_pair(
        "multipart",
        2,
        [
            ("12", [square(-87.6, 24.5, -80.0, 31.0), square(-81.9, 24.4, -81.7, 24.45), square(-80.3, 25.2, -80.1, 25.35)]),
            ("13", [square(-85.6, 31.0, -80.8, 35.0)]),
        ],
    )

    dense = []
    for i in range(25):
        cx, cy = -82.0 + (i % 5) * 0.1, 29.0 + (i // 5) * 0.1
        dense.append(("12086%06d" % (100 * (i + 1)), [blob(cx, cy, 0.045, 40, rng)]))
    expected["dense"] = write_pair("dense", 11, dense)

    bgs = []
    for i in range(6):
        x = rng.uniform(-81.0, -80.0)
        y = rng.uniform(26.0, 27.0)
        rings = None if i == 3 else [square(x, y, x + 0.01 * (i + 1), y + 0.013)]
        bgs.append(("12099%06d%d" % (5900 + i, i % 3 + 1), rings))
    expected["blockgroups"] = write_pair("blockgroups", 12, bgs, extra_numeric=True)

    with open("expected.json", "w") as f:
        json.dump(expected, f, indent=1, sort_keys=True)

    # Malformed headers, each derived from a valid pair by one change.
    shp = bytearray(open("grid3.shp", "rb").read())
    shp[0:4] = (9995).to_bytes(4, "big")
    open("bad_filecode.shp", "wb").write(shp)

    dbf = bytearray(open("grid3.dbf", "rb").read())
    dbf[0] = 0x30
    open("bad_version.dbf", "wb").write(dbf)

    w = shapefile.Writer("points", shapeType=shapefile.POINT)
    w.field("GEOID", "C", size=11)
    w.point(-82.3, 29.6)
    w.record("12001000100")
    w.close()

    w = shapefile.Writer("short_dbf", shapeType=shapefile.POLYGON)
    w.field("GEOID", "C", size=11)
    w.poly([square(0, 0, 1, 1)])
    w.record("12001000100")
    w.poly([square(1, 0, 2, 1)])
    w.record("12001000200")
    w.close()
    # grid3.shp carries 3 records; short_dbf.dbf carries 2.

    open("truncated.shp", "wb").write(open("grid3.shp", "rb").read()[:150])

    bad_json = {
        "broken": '{"type":"FeatureCollection","features":[{"type":"Feature",',
        "linestring": json.dumps({"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {"GEOID": "12001000100"},
             "geometry": {"type": "LineString", "coordinates": [[0, 0], [1, 1]]}}]}),
        "no_id": json.dumps({"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {"NAME": "x"},
             "geometry": {"type": "Polygon", "coordinates": [square(0, 0, 1, 1)]}}]}),
        "duplicate": json.dumps({"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {"GEOID": "12001000100"},
             "geometry": {"type": "Polygon", "coordinates": [square(0, 0, 1, 1)]}},
            {"type": "Feature", "properties": {"GEOID": "12001000100"},
             "geometry": {"type": "Polygon", "coordinates": [square(1, 0, 2, 1)]}}]}),
    }
    for name, text in bad_json.items():
        open(name + ".geojson", "w").write(text)

    # .shx index files are not read by the loader
    for p in glob.glob("*.shx"):
        os.remove(p)


if __name__ == "__main__":
    main()
