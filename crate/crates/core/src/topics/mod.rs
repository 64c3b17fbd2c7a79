//! Topic derivation: LDA, topic-count screening, condensation to broad labels
//! and training-set construction.

mod condense;
pub mod lda;
mod matching;
mod screen;

pub use condense::{
    assign_primary_topic, build_training_set, condense_topics, suggest_condensation, default_holdouts, holdout_manual_topics,
    top_ratios, topic_category_ratios, LabelSource, LabeledRecord, PrimaryTopic, TopicCondensation, TrainingSet,
};
pub use lda::{fit_lda, infer_doc_topics, DocTopics, InferConfig, LdaConfig, LdaModel, LdaSampler};
pub use matching::{align_columns, greedy_match, total_variation, TopicMatching, TopicPair};
pub use screen::{cluster_centroids, cosine_distance, screen_topic_count, Linkage};
