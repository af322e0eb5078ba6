#pragma once

#include <array>
#include <string_view>

namespace kept {

// Bundled public-domain English prose and verse, used as the bundled
// natural-language sample for the probe corpora. Plain byte-level text; no
// line contains a digit equation.
inline constexpr std::array<std::string_view, 30> kBundledParagraphs = {
    // --- Genesis 1 (KJV) ---
    "In the beginning God created the heaven and the earth. And the earth was without form, and "
    "void; and darkness was upon the face of the deep. And the Spirit of God moved upon the face "
    "of the waters. And God said, Let there be light: and there was light. And God saw the light, "
    "that it was good: and God divided the light from the darkness. And God called the light Day, "
    "and the darkness he called Night. And the evening and the morning were the first day.",

    "And God said, Let there be a firmament in the midst of the waters, and let it divide the "
    "waters from the waters. And God made the firmament, and divided the waters which were under "
    "the firmament from the waters which were above the firmament: and it was so. And God called "
    "the firmament Heaven. And the evening and the morning were the second day.",

    // --- Psalm 23 (KJV) ---
    "The Lord is my shepherd; I shall not want. He maketh me to lie down in green pastures: he "
    "leadeth me beside the still waters. He restoreth my soul: he leadeth me in the paths of "
    "righteousness for his name's sake. Yea, though I walk through the valley of the shadow of "
    "death, I will fear no evil: for thou art with me; thy rod and thy staff they comfort me. "
    "Thou preparest a table before me in the presence of mine enemies: thou anointest my head "
    "with oil; my cup runneth over. Surely goodness and mercy shall follow me all the days of my "
    "life: and I will dwell in the house of the Lord for ever.",

    // --- Gettysburg Address ---
    "Four score and seven years ago our fathers brought forth on this continent, a new nation, "
    "conceived in Liberty, and dedicated to the proposition that all men are created equal. Now "
    "we are engaged in a great civil war, testing whether that nation, or any nation so conceived "
    "and so dedicated, can long endure. We are met on a great battle-field of that war. We have "
    "come to dedicate a portion of that field, as a final resting place for those who here gave "
    "their lives that that nation might live. It is altogether fitting and proper that we should "
    "do this.",

    "But, in a larger sense, we can not dedicate, we can not consecrate, we can not hallow this "
    "ground. The brave men, living and dead, who struggled here, have consecrated it, far above "
    "our poor power to add or detract. The world will little note, nor long remember what we say "
    "here, but it can never forget what they did here. It is for us the living, rather, to be "
    "dedicated here to the unfinished work which they who fought here have thus far so nobly "
    "advanced. It is rather for us to be here dedicated to the great task remaining before us, "
    "that from these honored dead we take increased devotion to that cause for which they gave "
    "the last full measure of devotion, that we here highly resolve that these dead shall not "
    "have died in vain, that this nation, under God, shall have a new birth of freedom, and that "
    "government of the people, by the people, for the people, shall not perish from the earth.",

    // --- Declaration of Independence ---
    "When in the Course of human events, it becomes necessary for one people to dissolve the "
    "political bands which have connected them with another, and to assume among the powers of "
    "the earth, the separate and equal station to which the Laws of Nature and of Nature's God "
    "entitle them, a decent respect to the opinions of mankind requires that they should declare "
    "the causes which impel them to the separation. We hold these truths to be self-evident, "
    "that all men are created equal, that they are endowed by their Creator with certain "
    "unalienable Rights, that among these are Life, Liberty and the pursuit of Happiness.",

    // --- US Constitution preamble ---
    "We the People of the United States, in Order to form a more perfect Union, establish "
    "Justice, insure domestic Tranquility, provide for the common defence, promote the general "
    "Welfare, and secure the Blessings of Liberty to ourselves and our Posterity, do ordain and "
    "establish this Constitution for the United States of America.",

    // --- Lincoln, Second Inaugural ---
    "With malice toward none, with charity for all, with firmness in the right as God gives us "
    "to see the right, let us strive on to finish the work we are in, to bind up the nation's "
    "wounds, to care for him who shall have borne the battle and for his widow and his orphan, "
    "to do all which may achieve and cherish a just and lasting peace among ourselves and with "
    "all nations.",

    // --- Shakespeare, Sonnet 18 ---
    "Shall I compare thee to a summer's day? Thou art more lovely and more temperate: rough "
    "winds do shake the darling buds of May, and summer's lease hath all too short a date. "
    "Sometime too hot the eye of heaven shines, and often is his gold complexion dimmed; and "
    "every fair from fair sometime declines, by chance or nature's changing course untrimmed. "
    "But thy eternal summer shall not fade, nor lose possession of that fair thou owest; nor "
    "shall Death brag thou wanderest in his shade, when in eternal lines to time thou growest. "
    "So long as men can breathe or eyes can see, so long lives this, and this gives life to thee.",

    // --- Shakespeare, Sonnet 116 ---
    "Let me not to the marriage of true minds admit impediments. Love is not love which alters "
    "when it alteration finds, or bends with the remover to remove. O no, it is an ever-fixed "
    "mark that looks on tempests and is never shaken; it is the star to every wandering bark, "
    "whose worth's unknown, although his height be taken. Love's not Time's fool, though rosy "
    "lips and cheeks within his bending sickle's compass come; love alters not with his brief "
    "hours and weeks, but bears it out even to the edge of doom. If this be error and upon me "
    "proved, I never writ, nor no man ever loved.",

    // --- Hamlet ---
    "To be, or not to be, that is the question: whether 'tis nobler in the mind to suffer the "
    "slings and arrows of outrageous fortune, or to take arms against a sea of troubles and by "
    "opposing end them. To die, to sleep; no more; and by a sleep to say we end the heart-ache "
    "and the thousand natural shocks that flesh is heir to: 'tis a consummation devoutly to be "
    "wished. To die, to sleep; to sleep, perchance to dream: ay, there's the rub; for in that "
    "sleep of death what dreams may come, when we have shuffled off this mortal coil, must give "
    "us pause.",

    // --- Macbeth ---
    "Tomorrow, and tomorrow, and tomorrow, creeps in this petty pace from day to day, to the "
    "last syllable of recorded time; and all our yesterdays have lighted fools the way to dusty "
    "death. Out, out, brief candle! Life's but a walking shadow, a poor player that struts and "
    "frets his hour upon the stage, and then is heard no more. It is a tale told by an idiot, "
    "full of sound and fury, signifying nothing.",

    // --- A Tale of Two Cities ---
    "It was the best of times, it was the worst of times, it was the age of wisdom, it was the "
    "age of foolishness, it was the epoch of belief, it was the epoch of incredulity, it was the "
    "season of Light, it was the season of Darkness, it was the spring of hope, it was the "
    "winter of despair, we had everything before us, we had nothing before us, we were all going "
    "direct to Heaven, we were all going direct the other way.",

    // --- Moby Dick ---
    "Call me Ishmael. Some years ago, never mind how long precisely, having little or no money "
    "in my purse, and nothing particular to interest me on shore, I thought I would sail about a "
    "little and see the watery part of the world. It is a way I have of driving off the spleen, "
    "and regulating the circulation. Whenever I find myself growing grim about the mouth; "
    "whenever it is a damp, drizzly November in my soul; whenever I find myself involuntarily "
    "pausing before coffin warehouses, and bringing up the rear of every funeral I meet; then, I "
    "account it high time to get to sea as soon as I can.",

    // --- Pride and Prejudice ---
    "It is a truth universally acknowledged, that a single man in possession of a good fortune, "
    "must be in want of a wife. However little known the feelings or views of such a man may be "
    "on his first entering a neighbourhood, this truth is so well fixed in the minds of the "
    "surrounding families, that he is considered as the rightful property of some one or other "
    "of their daughters.",

    // --- The Raven ---
    "Once upon a midnight dreary, while I pondered, weak and weary, over many a quaint and "
    "curious volume of forgotten lore, while I nodded, nearly napping, suddenly there came a "
    "tapping, as of some one gently rapping, rapping at my chamber door. 'Tis some visitor, I "
    "muttered, tapping at my chamber door; only this and nothing more.",

    "Ah, distinctly I remember it was in the bleak December; and each separate dying ember "
    "wrought its ghost upon the floor. Eagerly I wished the morrow; vainly I had sought to "
    "borrow from my books surcease of sorrow, sorrow for the lost Lenore, for the rare and "
    "radiant maiden whom the angels name Lenore: nameless here for evermore.",

    // --- Jabberwocky ---
    "'Twas brillig, and the slithy toves did gyre and gimble in the wabe: all mimsy were the "
    "borogoves, and the mome raths outgrabe. Beware the Jabberwock, my son! The jaws that bite, "
    "the claws that catch! Beware the Jubjub bird, and shun the frumious Bandersnatch!",

    // --- O Captain! My Captain! ---
    "O Captain! my Captain! our fearful trip is done, the ship has weathered every rack, the "
    "prize we sought is won, the port is near, the bells I hear, the people all exulting, while "
    "follow eyes the steady keel, the vessel grim and daring; but O heart! heart! heart! O the "
    "bleeding drops of red, where on the deck my Captain lies, fallen cold and dead.",

    // --- Ozymandias ---
    "I met a traveller from an antique land who said: two vast and trunkless legs of stone stand "
    "in the desert. Near them, on the sand, half sunk, a shattered visage lies, whose frown, and "
    "wrinkled lip, and sneer of cold command, tell that its sculptor well those passions read "
    "which yet survive, stamped on these lifeless things, the hand that mocked them and the "
    "heart that fed: and on the pedestal these words appear: My name is Ozymandias, king of "
    "kings: look on my works, ye Mighty, and despair! Nothing beside remains.",

    // --- Walden ---
    "I went to the woods because I wished to live deliberately, to front only the essential "
    "facts of life, and see if I could not learn what it had to teach, and not, when I came to "
    "die, discover that I had not lived. I did not wish to live what was not life, living is so "
    "dear; nor did I wish to practise resignation, unless it was quite necessary. I wanted to "
    "live deep and suck out all the marrow of life.",

    // --- Aesop: The Fox and the Grapes ---
    "One hot summer's day a fox was strolling through an orchard till he came to a bunch of "
    "grapes just ripening on a vine which had been trained over a lofty branch. Just the thing "
    "to quench my thirst, quoth he. Drawing back a few paces, he took a run and a jump, and just "
    "missed the bunch. Turning round again with a one, two, three, he jumped up, but with no "
    "greater success. Again and again he tried after the tempting morsel, but at last had to "
    "give it up, and walked away with his nose in the air, saying: I am sure they are sour.",

    // --- Aesop: The Tortoise and the Hare ---
    "The hare was once boasting of his speed before the other animals. I have never yet been "
    "beaten, said he, when I put forth my full speed. I challenge any one here to race with me. "
    "The tortoise said quietly, I accept your challenge. That is a good joke, said the hare; I "
    "could dance round you all the way. Keep your boasting till you've beaten, answered the "
    "tortoise. Shall we race? So a course was fixed and a start was made. The hare darted almost "
    "out of sight at once, but soon stopped and, to show his contempt for the tortoise, lay down "
    "to have a nap. The tortoise plodded on and plodded on, and when the hare awoke from his "
    "nap, he saw the tortoise just near the winning-post and could not run up in time to save "
    "the race. Then said the tortoise: plodding wins the race.",

    // --- The North Wind and the Sun ---
    "The North Wind and the Sun were disputing which was the stronger, when a traveler came "
    "along wrapped in a warm cloak. They agreed that the one who first succeeded in making the "
    "traveler take his cloak off should be considered stronger than the other. Then the North "
    "Wind blew as hard as he could, but the more he blew the more closely did the traveler fold "
    "his cloak around him; and at last the North Wind gave up the attempt. Then the Sun shined "
    "out warmly, and immediately the traveler took off his cloak. And so the North Wind was "
    "obliged to confess that the Sun was the stronger of the two.",

    // --- Kubla Khan ---
    "In Xanadu did Kubla Khan a stately pleasure-dome decree: where Alph, the sacred river, ran "
    "through caverns measureless to man down to a sunless sea. So twice five miles of fertile "
    "ground with walls and towers were girdled round; and there were gardens bright with "
    "sinuous rills, where blossomed many an incense-bearing tree; and here were forests ancient "
    "as the hills, enfolding sunny spots of greenery.",

    // --- The Road Not Taken ---
    "Two roads diverged in a yellow wood, and sorry I could not travel both and be one traveler, "
    "long I stood and looked down one as far as I could to where it bent in the undergrowth; "
    "then took the other, as just as fair, and having perhaps the better claim, because it was "
    "grassy and wanted wear; though as for that the passing there had worn them really about "
    "the same.",

    // --- Frankenstein ---
    "It was on a dreary night of November that I beheld the accomplishment of my toils. With an "
    "anxiety that almost amounted to agony, I collected the instruments of life around me, that "
    "I might infuse a spark of being into the lifeless thing that lay at my feet. It was already "
    "one in the morning; the rain pattered dismally against the panes, and my candle was nearly "
    "burnt out, when, by the glimmer of the half-extinguished light, I saw the dull yellow eye "
    "of the creature open.",

    // --- Dracula ---
    "Left Munich at eight thirty-five on the first of May, arriving at Vienna early next "
    "morning; should have arrived at six forty-six, but train was an hour late. Buda-Pesth seems "
    "a wonderful place, from the glimpse which I got of it from the train and the little I could "
    "walk through the streets. I feared to go very far from the station, as we had arrived late "
    "and would start as near the correct time as possible.",

    // --- The Time Machine ---
    "The Time Traveller, for so it will be convenient to speak of him, was expounding a recondite "
    "matter to us. His grey eyes shone and twinkled, and his usually pale face was flushed and "
    "animated. The fire burned brightly, and the soft radiance of the incandescent lights in the "
    "lilies of silver caught the bubbles that flashed and passed in our glasses.",

    // --- Treasure Island ---
    "Squire Trelawney, Dr. Livesey, and the rest of these gentlemen having asked me to write "
    "down the whole particulars about Treasure Island, from the beginning to the end, keeping "
    "nothing back but the bearings of the island, and that only because there is still treasure "
    "not yet lifted, I take up my pen in the year of grace and go back to the time when my "
    "father kept the Admiral Benbow inn and the brown old seaman with the sabre cut first took "
    "up his lodging under our roof.",
};

}  // namespace kept
