//! Evaluation pipeline: PCA to 2-D, Gaussian KDE on a grid, Jensen-Shannon
//! divergence between sample sets, classical MDS over weight samples and a
//! k-means cluster count.

mod cluster;
mod kde;
pub mod linalg;
mod mds;
mod pca;

pub use cluster::{cluster_count, kmeans, silhouette, ClusterFit, SINGLE_CLUSTER_SCORE};
pub use kde::{jsd, jsd_grids, joint_bounds, kde_density, scott_bandwidth, Bounds, DensityGrid, GRID_SIZE};
pub use mds::{distance_matrix, mds_embed, MdsEmbedding};
pub use pca::{pca_apply, pca_fit, Projection2D};
