#include "gradlab/corpus.hpp"

namespace gradlab {

std::vector<FeatureClassSpec> default_pronoun_feature() {
    return {
        {"1SG", {"i"}},
        {"1PL", {"we"}},
        {"2SGPL", {"you"}},
        {"3SG", {"he", "she", "it"}},
        {"3PL", {"they"}},
    };
}

TemplateGrammar default_pronoun_grammar(std::uint64_t seed) {
    TemplateGrammar g;
    g.seed = seed;
    const char* templates[] = {
        // pronoun subjects; the verb carries number agreement
        "<p3sg> <v3sg> <adv> .",
        "<p3pl> <vpl> <adv> .",
        "the <adj> <noun> said <p3sg> <v3sg> <adv> .",
        "the <adj> <noun> said <p3pl> <vpl> <adv> .",
        "yesterday <p3sg> <v3sg> the <adj> <noun> .",
        "yesterday <p3pl> <vpl> the <adj> <noun> .",
        "<p1sg> <v1sg> the <noun> .",
        "<p1pl> <vpl> the <noun> .",
        "<p1sg> <v1sg> <adv> .",
        "<p1pl> <vpl> <adv> .",
        "<p2> <vpl> the <noun> .",
        // pronoun-free sentences
        "the <noun> <v3sg> <adv> .",
        "the <nouns> <vpl> <adv> .",
        "the <adj> <noun> <v3sg> the <noun> .",
        "the <adj> <nouns> <vpl> the <noun> .",
        "a <noun> <v3sg> near the <noun> .",
        "<nouns> <vpl> near the <adj> <noun> .",
    };
    for (const char* t : templates) {
        g.templates.push_back(split_template(t));
    }
    g.slot_fillers = {
        {"p3sg", {"he", "she", "it"}},
        {"p3pl", {"they"}},
        {"p1sg", {"i"}},
        {"p1pl", {"we"}},
        {"p2", {"you"}},
        {"v3sg", {"runs", "walks", "sleeps", "sings", "reads", "is", "was", "has", "likes", "sees"}},
        {"vpl", {"run", "walk", "sleep", "sing", "read", "are", "were", "have", "like", "see"}},
        {"v1sg", {"run", "walk", "sleep", "sing", "read", "am", "was", "have", "like", "see"}},
        {"adv", {"quickly", "often", "today", "again", "slowly", "here"}},
        {"adj", {"old", "small", "happy", "red", "quiet"}},
        {"noun", {"dog", "cat", "teacher", "river", "house", "child", "bird", "car", "tree", "book"}},
        {"nouns", {"dogs", "cats", "teachers", "children", "birds", "cars"}},
    };
    return g;
}

} // namespace gradlab
