//! Prompt bank, prompt rendering and fixed-window sample packing.

mod bank;
mod pack;

pub use bank::{read_examples, render_prompt, PromptBank, PromptExample, PromptTemplate};
pub use pack::{
    build_packed_stream, cap_task, PackedSample, PackedSegment, Packer, PackingConfig,
    DEFAULT_CONTEXT_WINDOW, DEFAULT_TASK_CAP,
};
