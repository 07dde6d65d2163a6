#include "ntp/train.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

namespace {

const char* kFacts5 =
    "fatherOf(abe, homer).\n"
    "parentOf(homer, bart).\n"
    "parentOf(homer, lisa).\n"
    "grandpaOf(abe, bart).\n"
    "grandpaOf(abe, lisa).\n";

bool stores_equal(const ntp::EmbeddingStore& a, const ntp::EmbeddingStore& b,
                  const ntp::SymbolTable& vocab) {
    for (std::size_t id = 0; id < vocab.size(); ++id) {
        auto va = a.vec(static_cast<ntp::SymbolId>(id));
        auto vb = b.vec(static_cast<ntp::SymbolId>(id));
        for (int i = 0; i < a.dim(); ++i)
            if (va[i] != vb[i]) return false;
    }
    return true;
}

// --- negative sampling -----------------------------------------------------

TEST(SampleNegatives, AlternatesCorruptedSlotAndAvoidsKbFacts) {
    ntp::KnowledgeBase kb = ntp::parse_kb(kFacts5);
    ntp::Atom fact = kb.facts[0].head;  // fatherOf(abe, homer)
    auto negs = ntp::sample_negatives(fact, kb, 4, 11);
    ASSERT_EQ(negs.size(), 4u);
    for (std::size_t i = 0; i < negs.size(); ++i) {
        const ntp::Atom& n = negs[i];
        EXPECT_TRUE(n.ground());
        EXPECT_EQ(n.pred().sym, fact.pred().sym);
        EXPECT_FALSE(kb.has_fact(n.pred().sym, n.subj().sym, n.obj().sym));
        if (i % 2 == 0) {  // subject corrupted, object kept
            EXPECT_NE(n.subj().sym, fact.subj().sym);
            EXPECT_EQ(n.obj().sym, fact.obj().sym);
        } else {  // object corrupted, subject kept
            EXPECT_EQ(n.subj().sym, fact.subj().sym);
            EXPECT_NE(n.obj().sym, fact.obj().sym);
        }
    }
}

TEST(SampleNegatives, DeterministicPerSeed) {
    ntp::KnowledgeBase kb = ntp::parse_kb(kFacts5);
    ntp::Atom fact = kb.facts[1].head;
    auto a = ntp::sample_negatives(fact, kb, 6, 3);
    auto b = ntp::sample_negatives(fact, kb, 6, 3);
    auto c = ntp::sample_negatives(fact, kb, 6, 4);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i] == b[i]);
    bool all_same = a.size() == c.size();
    for (std::size_t i = 0; all_same && i < a.size(); ++i) all_same = a[i] == c[i];
    EXPECT_FALSE(all_same);
}

TEST(SampleNegatives, ZeroRequestedGivesEmpty) {
    ntp::KnowledgeBase kb = ntp::parse_kb(kFacts5);
    EXPECT_TRUE(ntp::sample_negatives(kb.facts[0].head, kb, 0, 1).empty());
}

TEST(SampleNegatives, NonGroundFactRejected) {
    ntp::KnowledgeBase kb = ntp::parse_kb(kFacts5);
    ntp::Atom g = kb.facts[0].head;
    g.items[2] = ntp::Term::make_var("X");
    EXPECT_THROW(ntp::sample_negatives(g, kb, 1, 1), std::invalid_argument);
}

TEST(SampleNegatives, SaturatedKbExhaustsAttemptBudget) {
    // Every corruption of p(a, b) over {a, b} is itself a KB fact.
    ntp::KnowledgeBase kb = ntp::parse_kb("p(a, a).\np(a, b).\np(b, a).\np(b, b).\n");
    EXPECT_THROW(ntp::sample_negatives(kb.facts[1].head, kb, 1, 5), std::runtime_error);
}

// --- optimizer -------------------------------------------------------------

TEST(Optimizer, SgdAppliesExactStep) {
    ntp::KnowledgeBase kb = ntp::parse_kb("p(a, b).\n");
    ntp::EmbeddingStore store = ntp::init_embeddings(kb.vocab, 3, 1);
    ntp::SymbolId a = *kb.vocab.lookup("a", ntp::SymbolKind::constant);
    std::vector<double> before(store.vec(a).begin(), store.vec(a).end());
    ntp::Gradients g;
    g.dim = 3;
    g.row(a) = {0.5, -2.0, 0.25};
    ntp::Optimizer opt(ntp::Optimizer::Kind::sgd, 0.1, 3);
    opt.step(store, g);
    auto after = store.vec(a);
    for (int i = 0; i < 3; ++i) {
        double expected = before[static_cast<std::size_t>(i)];
        expected -= 0.1 * g.row(a)[static_cast<std::size_t>(i)];
        EXPECT_EQ(after[i], expected);
    }
}

TEST(Optimizer, ZeroOrAbsentGradientLeavesStoreUntouched) {
    ntp::KnowledgeBase kb = ntp::parse_kb("p(a, b).\n");
    ntp::EmbeddingStore store = ntp::init_embeddings(kb.vocab, 3, 1);
    ntp::EmbeddingStore copy = store;
    ntp::SymbolId a = *kb.vocab.lookup("a", ntp::SymbolKind::constant);
    ntp::Gradients g;
    g.dim = 3;
    g.row(a);  // zero row
    ntp::Optimizer sgd(ntp::Optimizer::Kind::sgd, 0.1, 3);
    sgd.step(store, g);
    ntp::Gradients empty;
    empty.dim = 3;
    sgd.step(store, empty);
    EXPECT_TRUE(stores_equal(store, copy, kb.vocab));
}

TEST(Optimizer, AdamFirstStepMatchesClosedForm) {
    // After one update with fresh state: m/c1 = g, v/c2 = g^2, so the step is
    // lr * g / (|g| + eps).
    ntp::KnowledgeBase kb = ntp::parse_kb("p(a, b).\n");
    ntp::EmbeddingStore store = ntp::init_embeddings(kb.vocab, 3, 1);
    ntp::SymbolId a = *kb.vocab.lookup("a", ntp::SymbolKind::constant);
    ntp::SymbolId b = *kb.vocab.lookup("b", ntp::SymbolKind::constant);
    std::vector<double> before(store.vec(a).begin(), store.vec(a).end());
    std::vector<double> b_before(store.vec(b).begin(), store.vec(b).end());
    std::vector<double> grad{0.5, -2.0, 0.25};
    ntp::Gradients g;
    g.dim = 3;
    g.row(a) = grad;
    ntp::Optimizer opt(ntp::Optimizer::Kind::adam, 0.01, 3);
    opt.step(store, g);
    for (int i = 0; i < 3; ++i) {
        double gi = grad[static_cast<std::size_t>(i)];
        double expected = before[static_cast<std::size_t>(i)] -
                          0.01 * gi / (std::sqrt(gi * gi) + 1e-8);
        EXPECT_NEAR(store.vec(a)[i], expected, 1e-12);
    }
    // Symbols absent from the gradient map keep their vectors bit for bit.
    for (int i = 0; i < 3; ++i) EXPECT_EQ(store.vec(b)[i], b_before[static_cast<std::size_t>(i)]);
}

// --- train loop ------------------------------------------------------------

TEST(Train, ValidationErrors) {
    ntp::KnowledgeBase kb = ntp::parse_kb(kFacts5);
    ntp::EmbeddingStore store = ntp::init_embeddings(kb.vocab, 4, 1);
    ntp::TrainConfig cfg;
    cfg.epochs = -1;
    EXPECT_THROW(ntp::train(kb, store, cfg), std::invalid_argument);
    cfg = {};
    cfg.batch_size = 0;
    EXPECT_THROW(ntp::train(kb, store, cfg), std::invalid_argument);
    cfg = {};
    cfg.learning_rate = 0.0;
    EXPECT_THROW(ntp::train(kb, store, cfg), std::invalid_argument);
    cfg = {};
    cfg.negatives_per_positive = -1;
    EXPECT_THROW(ntp::train(kb, store, cfg), std::invalid_argument);
    cfg = {};
    cfg.rebuild_every = -1;
    EXPECT_THROW(ntp::train(kb, store, cfg), std::invalid_argument);
}

TEST(Train, ZeroEpochsChangesNothingAndLogsNothing) {
    ntp::KnowledgeBase kb = ntp::parse_kb(kFacts5);
    ntp::EmbeddingStore store = ntp::init_embeddings(kb.vocab, 4, 1);
    ntp::EmbeddingStore copy = store;
    ntp::TrainConfig cfg;
    cfg.epochs = 0;
    ntp::TrainResult r = ntp::train(kb, store, cfg);
    EXPECT_TRUE(r.metrics.empty());
    EXPECT_EQ(r.unprovable_queries, 0u);
    EXPECT_TRUE(stores_equal(store, copy, kb.vocab));
}

TEST(Train, LossImprovesOnSmallKb) {
    ntp::KnowledgeBase kb = ntp::parse_kb(kFacts5);
    ntp::EmbeddingStore store = ntp::init_embeddings(kb.vocab, 4, 7, 2.0);
    ntp::TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 5;
    cfg.learning_rate = 0.05;
    cfg.negatives_per_positive = 2;
    cfg.seed = 7;
    ntp::TrainResult r = ntp::train(kb, store, cfg);
    ASSERT_EQ(r.metrics.size(), 10u);
    for (const ntp::MetricsRecord& m : r.metrics) {
        EXPECT_TRUE(std::isfinite(m.loss));
        EXPECT_GT(m.loss, 0.0);
    }
    EXPECT_LT(r.metrics.back().loss, r.metrics.front().loss);
    EXPECT_EQ(r.unprovable_queries, 0u);
}

TEST(Train, DeterministicGivenSeed) {
    ntp::KnowledgeBase kb = ntp::parse_kb(kFacts5);
    ntp::TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 2;
    cfg.seed = 5;
    ntp::EmbeddingStore s1 = ntp::init_embeddings(kb.vocab, 4, 2);
    ntp::EmbeddingStore s2 = ntp::init_embeddings(kb.vocab, 4, 2);
    ntp::TrainResult r1 = ntp::train(kb, s1, cfg);
    ntp::TrainResult r2 = ntp::train(kb, s2, cfg);
    ASSERT_EQ(r1.metrics.size(), r2.metrics.size());
    for (std::size_t i = 0; i < r1.metrics.size(); ++i)
        EXPECT_EQ(r1.metrics[i].loss, r2.metrics[i].loss);
    EXPECT_TRUE(stores_equal(s1, s2, kb.vocab));
}

TEST(Train, ExhaustiveAndFullKnnAreBitIdentical) {
    ntp::KnowledgeBase kb = ntp::parse_kb(kFacts5);
    ntp::TrainConfig ex;
    ex.epochs = 4;
    ex.batch_size = 2;
    ex.seed = 9;
    ntp::TrainConfig knn = ex;
    knn.prover.mode = ntp::ProveMode::exact_knn;
    knn.prover.k = static_cast<int>(kb.facts.size());
    ntp::EmbeddingStore s1 = ntp::init_embeddings(kb.vocab, 4, 3);
    ntp::EmbeddingStore s2 = ntp::init_embeddings(kb.vocab, 4, 3);
    ntp::TrainResult r1 = ntp::train(kb, s1, ex);
    ntp::TrainResult r2 = ntp::train(kb, s2, knn);
    ASSERT_EQ(r1.metrics.size(), r2.metrics.size());
    for (std::size_t i = 0; i < r1.metrics.size(); ++i)
        EXPECT_EQ(r1.metrics[i].loss, r2.metrics[i].loss);
    EXPECT_EQ(r1.unprovable_queries, r2.unprovable_queries);
    EXPECT_TRUE(stores_equal(s1, s2, kb.vocab));
}

TEST(Train, SingleFactKbIsUnprovableUnderSelfMask) {
    // The positive masks its own fact and nothing else can prove it, so every
    // query is unprovable and the store never moves.
    ntp::KnowledgeBase kb = ntp::parse_kb("p(a, b).\n");
    ntp::EmbeddingStore store = ntp::init_embeddings(kb.vocab, 4, 1);
    ntp::EmbeddingStore copy = store;
    ntp::TrainConfig cfg;
    cfg.epochs = 3;
    cfg.negatives_per_positive = 0;
    ntp::TrainResult r = ntp::train(kb, store, cfg);
    EXPECT_EQ(r.unprovable_queries, 3u);
    ASSERT_EQ(r.metrics.size(), 3u);
    for (const ntp::MetricsRecord& m : r.metrics) EXPECT_EQ(m.loss, 0.0);
    EXPECT_TRUE(stores_equal(store, copy, kb.vocab));
}

TEST(Train, BatchNumberingAndRebuildCadence) {
    ntp::KnowledgeBase kb = ntp::parse_kb(kFacts5);  // 5 facts, batch 2 -> 3/epoch
    ntp::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.prover.mode = ntp::ProveMode::exact_knn;
    cfg.prover.k = 3;
    ntp::EmbeddingStore store = ntp::init_embeddings(kb.vocab, 4, 4);
    ntp::TrainResult r = ntp::train(kb, store, cfg);
    ASSERT_EQ(r.metrics.size(), 6u);
    int want_epoch[] = {1, 1, 1, 2, 2, 2};
    int want_batch[] = {1, 2, 3, 1, 2, 3};
    for (int i = 0; i < 6; ++i) {
        EXPECT_EQ(r.metrics[static_cast<std::size_t>(i)].epoch, want_epoch[i]);
        EXPECT_EQ(r.metrics[static_cast<std::size_t>(i)].batch, want_batch[i]);
        EXPECT_GE(r.metrics[static_cast<std::size_t>(i)].wall_ms, 0);
    }
    // rebuild_every=0 means once per epoch's worth of batches, plus the
    // upfront build: counts 1 during epoch 1, 2 after batch 3, 3 after batch 6.
    EXPECT_EQ(r.metrics[0].index_rebuilds, 1);
    EXPECT_EQ(r.metrics[2].index_rebuilds, 2);
    EXPECT_EQ(r.metrics[5].index_rebuilds, 3);
}

TEST(Train, ExhaustiveModeNeverRebuildsAnIndex) {
    ntp::KnowledgeBase kb = ntp::parse_kb(kFacts5);
    ntp::TrainConfig cfg;
    cfg.epochs = 2;
    ntp::EmbeddingStore store = ntp::init_embeddings(kb.vocab, 4, 4);
    ntp::TrainResult r = ntp::train(kb, store, cfg);
    for (const ntp::MetricsRecord& m : r.metrics) EXPECT_EQ(m.index_rebuilds, 0);
}

TEST(MetricsRecord, JsonShape) {
    ntp::MetricsRecord m;
    m.epoch = 2;
    m.batch = 3;
    m.loss = 0.5;
    m.wall_ms = 12;
    m.index_rebuilds = 4;
    EXPECT_EQ(ntp::to_json(m),
              "{\"epoch\":2,\"batch\":3,\"loss\":0.5,\"wall_ms\":12,\"index_rebuilds\":4}");
}

}  // namespace
