#!/usr/bin/env python3
"""Run MediaPipe Holistic over a video and print a raw landmark dump as JSON.

Usage as the toolkit's estimator:

    export SPOTERKIT_ESTIMATOR="python3 scripts/mediapipe_dump.py"
    spoterkit extract clip.mp4 --out clip.landmarks.json

Needs `pip install mediapipe opencv-python-headless`.
"""

import json
import sys

import cv2
import mediapipe as mp


def points(landmarks):
    if landmarks is None:
        return None
    return [[lm.x, lm.y, lm.z, getattr(lm, "visibility", 1.0)] for lm in landmarks.landmark]


def main():
    if len(sys.argv) != 2:
        sys.exit("usage: mediapipe_dump.py <video>")
    cap = cv2.VideoCapture(sys.argv[1])
    if not cap.isOpened():
        sys.exit(f"cannot open {sys.argv[1]}")
    fps = cap.get(cv2.CAP_PROP_FPS) or 25.0
    frames = []
    with mp.solutions.holistic.Holistic(static_image_mode=False, model_complexity=1) as holistic:
        while True:
            ok, bgr = cap.read()
            if not ok:
                break
            res = holistic.process(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB))
            frames.append(
                {
                    "body": points(res.pose_landmarks),
                    "left_hand": points(res.left_hand_landmarks),
                    "right_hand": points(res.right_hand_landmarks),
                }
            )
    cap.release()
    json.dump({"estimator": f"mediapipe-holistic {mp.__version__}", "fps": fps, "frames": frames}, sys.stdout)


if __name__ == "__main__":
    main()
