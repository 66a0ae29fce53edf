#!/usr/bin/env python3
"""Convert an NGSIM US-101 trajectory file to the trajfuse ingest schema.

Output columns: vehicle_id,time_s,position_m,lane_id. Time is seconds from
the first kept frame, position is Local_Y in metres. Only vehicles whose
every row lies in one of --lanes are kept.

    python3 tools/ngsim_to_csv.py trajectories-0750am-0805am.csv data/us101_0750_0805.csv
"""

import argparse
import sys

import pandas as pd

FEET = 0.3048


def convert(src, lanes, location=None, y_min=None, y_max=None):
    cols = ["Vehicle_ID", "Frame_ID", "Local_Y", "Lane_ID"]
    df = pd.read_csv(src, usecols=lambda c: c in cols + ["Location"])
    if location and "Location" in df.columns:
        df = df[df["Location"].str.lower() == location.lower()]
    df = df.drop_duplicates(["Vehicle_ID", "Frame_ID"]).sort_values(["Vehicle_ID", "Frame_ID"])
    df["position_m"] = df["Local_Y"] * FEET
    if y_min is not None:
        df = df[df["position_m"] >= y_min]
    if y_max is not None:
        df = df[df["position_m"] <= y_max]

    on_lanes = df.groupby("Vehicle_ID")["Lane_ID"].transform(lambda s: s.isin(lanes).all())
    dropped = df.loc[~on_lanes, "Vehicle_ID"].nunique()
    df = df[on_lanes]

    out = pd.DataFrame({
        "vehicle_id": df["Vehicle_ID"].astype(int),
        "time_s": (df["Frame_ID"] - df["Frame_ID"].min()) / 10.0,
        "position_m": df["position_m"].round(4),
        "lane_id": df["Lane_ID"].astype(int),
    })
    return out, dropped


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src")
    ap.add_argument("dst")
    ap.add_argument("--lanes", default="1,2", help="comma-separated NGSIM Lane_IDs to keep")
    ap.add_argument("--location", default="us-101", help="Location filter for the combined data file")
    ap.add_argument("--y-min", type=float, help="drop rows upstream of this position [m]")
    ap.add_argument("--y-max", type=float, help="drop rows downstream of this position [m]")
    args = ap.parse_args()

    lanes = [int(x) for x in args.lanes.split(",")]
    out, dropped = convert(args.src, lanes, args.location, args.y_min, args.y_max)
    out.to_csv(args.dst, index=False)
    print(f"{out['vehicle_id'].nunique()} vehicles, {len(out)} rows; "
          f"{dropped} vehicles left the kept lanes and were dropped", file=sys.stderr)


if __name__ == "__main__":
    main()
