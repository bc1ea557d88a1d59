"""
Heel contacts, strides and model segments
=========================================

Contacts are peaks of V + AP; the ML sway decides left or right. Strides
run from one left contact to the next and become 128x3 segments for the
CNN and 1024x3 eight-stride blocks for the GRU.
"""

from gaitshap.pipeline import preprocess, process_subject
from gaitshap.segmentation import detect_heel_contacts, extract_strides, split_subjects
from gaitshap.synthetic import GaitGenParams, generate_cohort, generate_subject_trace

trace, truth = generate_subject_trace("OlderAdult", GaitGenParams(noise_std=0.05))
clean = preprocess(trace)

found = detect_heel_contacts(clean)
print("true contacts:    ", [(e.sample_index, e.side.value[0]) for e in truth[:6]])
print("detected contacts:", [(e.sample_index, e.side.value[0]) for e in found[:6]])

strides = extract_strides(clean, found)
print(f"{len(strides)} strides; first spans [{strides[0].start}, {strides[0].stop}), "
      f"right contact at offset {strides[0].right_offset}")

# one call does filtering, detection and both segment kinds
subject = process_subject(trace)
print("CNN segments:", len(subject.cnn), subject.cnn[0].data.shape)
print("GRU blocks:  ", len(subject.gru), subject.gru[0].data.shape, "anchors", subject.gru[0].anchors[:3])
print("included:", subject.included)

# subject-level split, stratified by group
cohort = generate_cohort(10, 10, seed=1)
split = split_subjects([(t.subject_id, g) for t, _, g in cohort], ratio=(146, 49, 49), seed=0)
print("train/validation/test subjects:", len(split.train), len(split.validation), len(split.test))
